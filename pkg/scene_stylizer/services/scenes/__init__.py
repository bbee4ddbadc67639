# Scene sources: analytic primitives, procedural datasets and transforms.json captures
