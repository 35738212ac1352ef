"""Module entry point: ``python -m tvflow`` runs the command-line interface."""

import sys

from tvflow.cli import main

if __name__ == "__main__":
    sys.exit(main())
