"""Main entry point for mcf-nav."""

import sys

from mcf_nav.cli import main

if __name__ == "__main__":
    sys.exit(main())
