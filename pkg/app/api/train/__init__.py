# Generator/critic training command
