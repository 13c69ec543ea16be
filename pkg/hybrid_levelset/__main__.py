"""`python -m hybrid_levelset` runs the `levelset` command group."""

from __future__ import annotations

from .main import main

if __name__ == "__main__":
    main(prog_name="levelset")
