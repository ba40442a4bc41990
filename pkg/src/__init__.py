# Initialization of the src package
# This file makes the src folder an importable Python package