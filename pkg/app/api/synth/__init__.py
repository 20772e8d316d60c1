# Synthetic dataset command
