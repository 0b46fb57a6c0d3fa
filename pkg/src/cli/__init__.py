"""
Command-line surface of BCMInfer.
"""

from cli.commands import main

__all__ = ["main"]
