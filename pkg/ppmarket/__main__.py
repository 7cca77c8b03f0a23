"""
Entry point for the ppmarket command.
"""
import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
