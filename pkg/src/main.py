#!/usr/bin/env python3
"""
BCMInfer - simulation and inference for bounded-confidence opinion models
"""

import sys
import os

# Add src directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dotenv import load_dotenv

from cli.commands import main as run_cli


def main():
    """Main application entry point."""
    # .env in the working directory may set BCMINFER_CONFIG_DIR / BCMINFER_LOG_LEVEL
    load_dotenv()

    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
