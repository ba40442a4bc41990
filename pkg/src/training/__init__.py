# Initialization of the training package
# Optimizer, checkpoints and the joint training loop
