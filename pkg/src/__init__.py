"""Certified solver for measure-valued continuous linear programs (M-CLP) and SCLPs."""
__version__ = "1.0.0"
