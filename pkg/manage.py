#!/usr/bin/env python
"""Command-line utility: the TIGAN subcommands plus Django's own (migrate, test, ...)."""
import sys

from topics.cli import run


def main():
    """Run a subcommand and exit with its status."""
    sys.exit(run(sys.argv))


if __name__ == '__main__':
    main()
