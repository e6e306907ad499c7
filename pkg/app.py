import sys

from src.cli import main

# -----------------------------------------------------------------------------
# Command-line entry point (python app.py <command> --help)
# -----------------------------------------------------------------------------
if __name__ == "__main__":
    sys.exit(main())
