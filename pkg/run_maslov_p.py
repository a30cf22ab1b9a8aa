#!/usr/bin/env python3
"""Standalone maslov-p script."""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from cli.maslov_p import main

if __name__ == "__main__":
    main()
