"""Rebuild MovieLens 100k ``u.data`` / ``u.user`` from the recbole wheel.

The wheel ships the dataset as atomic files with a typed header line and
tab-separated user metadata; this strips the header and rewrites the user
file with ``|`` separators so it matches the GroupLens layout.

    python scripts/fetch_movielens.py /root/data/ml-100k
"""

import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

PREFIX = "recbole/dataset_example/ml-100k/ml-100k"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--wheel", help="path to a recbole wheel; downloaded with pip if omitted")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "recbole==1.2.1",
                            "-d", tmp], check=True)
            wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        os.makedirs(args.out_dir, exist_ok=True)
        with zipfile.ZipFile(wheel) as z:
            inter = z.read(PREFIX + ".inter").decode().splitlines()[1:]
            users = z.read(PREFIX + ".user").decode().splitlines()[1:]
    with open(os.path.join(args.out_dir, "u.data"), "w") as fh:
        fh.write("\n".join(inter) + "\n")
    with open(os.path.join(args.out_dir, "u.user"), "w") as fh:
        fh.write("\n".join(line.replace("\t", "|") for line in users) + "\n")
    print(f"wrote {len(inter)} ratings and {len(users)} users to {args.out_dir}")


if __name__ == "__main__":
    main()
