"""
dimg-lab: dynamic information manipulation games on finite POMDPs.
"""
__version__ = "0.1.0"
TOOL_NAME = "dimg-lab"
