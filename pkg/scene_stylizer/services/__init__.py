# Scene representation, rendering and evaluation services
