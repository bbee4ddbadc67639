# Training stages, ablation matrix and the per-view baseline
