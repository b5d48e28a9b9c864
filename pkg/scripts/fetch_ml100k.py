"""Fetch MovieLens 100K ratings for the desk-scale experiment.

The RecBole wheel ships ml-100k as a tab-separated ``.inter`` file, which makes
it reachable through an ordinary pip index when grouplens.org is not.

    python scripts/fetch_ml100k.py [DEST_DIR]   # default /root/data/ml-100k
"""

import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    dest = Path(argv[0] if argv else "/root/data/ml-100k")
    dest.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
                        "-d", tmp, "recbole==1.2.1"], check=True)
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            target = dest / "ml-100k.inter"
            target.write_bytes(zf.read(MEMBER))
    print(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
