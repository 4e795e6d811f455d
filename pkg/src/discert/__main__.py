"""Module entry point: python -m discert <subcommand> ..."""

from .disctl import main

if __name__ == "__main__":
    raise SystemExit(main())
