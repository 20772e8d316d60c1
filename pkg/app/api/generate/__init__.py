# Sampling command
