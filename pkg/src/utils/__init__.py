# Initialization of the utils package
# This file makes the utils folder an importable Python package