# Synthetic augmentation command
