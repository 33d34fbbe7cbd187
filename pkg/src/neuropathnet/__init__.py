"""Dynamic path-trajectory learning for brain functional connectivity."""
__version__ = "0.1.0"
