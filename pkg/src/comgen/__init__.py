"""Code comment generation for Java methods from code, AST, and API docs."""

__version__ = "0.1.0"
