# Initialization of the nerf package
# Radiance field, renderer, deformable sparse kernel and blur model
