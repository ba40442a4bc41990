# Initialization of the data package
# Analytic scenes, blur synthesis and the dataset directory format
