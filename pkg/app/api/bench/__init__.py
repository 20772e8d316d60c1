# Ablation and augmentation benchmark command
