#!/usr/bin/env python3

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli import run


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
