"""Shared helpers for the figure scripts: argument parsing and curve output."""

import argparse
from pathlib import Path

from cefinfer.cli import slug, write_curve_csv, write_json


def parser(doc: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--out", default=default_out)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=200_000)
    return p


def save(out: Path, prefix: str, name: str, curve) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_curve_csv(out / f"{prefix}_{slug(name)}.csv", curve)
    return curve.summary()


__all__ = ["parser", "save", "write_json"]
