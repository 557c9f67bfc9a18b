#!/usr/bin/env python3
"""
emgkit - EMG hand-gesture recognition pipeline
Main entry point for the command-line tool
"""
import sys

from cli.commands import run_command


def main() -> int:
    """Main application entry point"""
    return run_command(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
