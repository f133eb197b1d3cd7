#!/usr/bin/env python
"""Запуск kgscatter из командной строки."""
import sys

from cli import main
from utils import load_env

if __name__ == "__main__":
    load_env()  # KGSCATTER_THREADS / KGSCATTER_LOG_LEVEL из .env
    if len(sys.argv) == 1:
        print("=" * 60)
        print("kgscatter: Klein-Gordon modified scattering profiles")
        print("=" * 60)
        print("Commands: coeffs, profile, residual, solve, check")
        print("Example:  python run.py check")
        print("=" * 60)
        sys.exit(0)
    sys.exit(main())
