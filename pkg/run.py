#!/usr/bin/env python
"""Simple runner script for the dicke-scar CLI"""
import asyncio
import sys

from dickescar.main import main

if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
