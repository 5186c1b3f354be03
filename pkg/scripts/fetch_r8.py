#!/usr/bin/env python3
"""Download the public R8 corpus (all-terms variant) into data/r8/.

The acceptance suite looks for the two files below under DOCEMBED_R8_DIR or
<repo>/data/r8/ and skips the corpus-dependent criteria when they are absent.
This script needs plain outbound HTTPS; it prints each file's sha256 so a
pinned checksum can be recorded, and enforces one when passed.
"""

import argparse
import hashlib
import sys
import urllib.request
from pathlib import Path

BASE = "https://www.cs.umb.edu/~smimarog/textmining/datasets"
FILES = {
    "r8-train-all-terms.txt": None,  # sha256 pins can be added once recorded
    "r8-test-all-terms.txt": None,
}


def fetch(url: str, dest: Path, expected_sha: str | None) -> None:
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        data = resp.read()
    digest = hashlib.sha256(data).hexdigest()
    print(f"  sha256 {digest} ({len(data)} bytes)")
    if expected_sha and digest != expected_sha:
        sys.exit(f"checksum mismatch for {dest.name}: expected {expected_sha}")
    dest.write_bytes(data)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=None,
                        help="target directory (default <repo>/data/r8)")
    parser.add_argument("--base-url", default=BASE)
    parser.add_argument("--sha256-train", default=FILES["r8-train-all-terms.txt"])
    parser.add_argument("--sha256-test", default=FILES["r8-test-all-terms.txt"])
    args = parser.parse_args()

    out_dir = Path(args.out_dir) if args.out_dir else \
        Path(__file__).resolve().parents[1] / "data" / "r8"
    out_dir.mkdir(parents=True, exist_ok=True)
    shas = {"r8-train-all-terms.txt": args.sha256_train,
            "r8-test-all-terms.txt": args.sha256_test}
    for name, sha in shas.items():
        fetch(f"{args.base_url}/{name}", out_dir / name, sha)
    print(f"R8 corpus ready under {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
