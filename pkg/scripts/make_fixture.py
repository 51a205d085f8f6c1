#!/usr/bin/env python3
"""Regenerate the bundled synthetic dataset under data/fixture/."""

import argparse

from ctrnli.fixture import write_fixture


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/fixture", help="output directory")
    args = parser.parse_args()
    corpus_path, claims_path = write_fixture(args.out)
    print(f"wrote {corpus_path}")
    print(f"wrote {claims_path}")


if __name__ == "__main__":
    main()
