"""Drive the command line end to end: generate data, train, evaluate, and
dehaze one pair, all through the console entry point."""

import os
import subprocess
import sys
import tempfile

workdir = tempfile.mkdtemp(prefix="dehazemamba_cli_")
root = os.path.join(workdir, "ds")
ckpt = os.path.join(workdir, "model.dhmb")
config = os.path.join(workdir, "run.ini")

with open(config, "w") as f:
    f.write(f"""\
[model]
variant = micro

[train]
steps = 40
batch_size = 4
crop_size = 16
log_interval = 10

[data]
root = {root}
count = 4
height = 32
width = 32
seed = 5

[paths]
checkpoint = {ckpt}

[infer]
hazy = {root}/pairs/00000_hazy.ppm
sar = {root}/pairs/00000_sar.pgm
output = {workdir}/dehazed.ppm
""")


def run(*args):
    cmd = [sys.executable, "-m", "dehazemamba.cli", *args]
    print(f"$ dehazemamba {' '.join(args)}")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout, end="")
    if proc.returncode != 0:
        print(proc.stderr, end="", file=sys.stderr)
        raise SystemExit(proc.returncode)


run("gen-data", "--config", config)
run("stats", "--config", config)
run("train", "--config", config)
run("eval", "--config", config)
run("infer", "--config", config)
print(f"\nartifacts under {workdir}")
