#!/usr/bin/env python3
"""Seal a document into generated AVI/MP4 clips and check that the result
still decodes frame for frame. Usage: check_playback.py <path-to-etea-binary>"""
import os
import subprocess
import sys
import tempfile

import cv2
import numpy as np

ETEA = os.path.abspath(sys.argv[1] if len(sys.argv) > 1 else "target/debug/etea")


def make_clip(path, fourcc, frames=48):
    w = cv2.VideoWriter(path, cv2.VideoWriter_fourcc(*fourcc), 24, (160, 120))
    for i in range(frames):
        img = np.zeros((120, 160, 3), np.uint8)
        cv2.rectangle(img, (i * 2, 20), (i * 2 + 30, 60), (0, 255, 255), -1)
        w.write(img)
    w.release()


def decode(path):
    cap = cv2.VideoCapture(path)
    frames = []
    while True:
        ok, f = cap.read()
        if not ok:
            break
        frames.append(f)
    cap.release()
    return frames


def run(*args, cwd):
    subprocess.run([ETEA, *args], cwd=cwd, check=True, env={**os.environ, "RUST_LOG": "warn"})


def main():
    failures = 0
    with tempfile.TemporaryDirectory() as d:
        with open(os.path.join(d, "doc.bin"), "wb") as f:
            f.write(os.urandom(50_000))
        run("keygen", "--out", "k", cwd=d)
        for name, fourcc in [("clip.avi", "MJPG"), ("clip.mp4", "mp4v"), ("clip2.avi", "XVID")]:
            src = os.path.join(d, name)
            make_clip(src, fourcc)
            if not os.path.exists(src) or os.path.getsize(src) == 0:
                print(f"{name}: encoder {fourcc} unavailable, skipped")
                continue
            out = "sealed-" + name
            run("seal", "--key", "k", "--in", "doc.bin", "--carrier", name, "--out", out, cwd=d)
            a, b = decode(src), decode(os.path.join(d, out))
            same = len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
            print(f"{name} ({fourcc}): original {len(a)} frames, sealed {len(b)} frames, "
                  f"identical={same}")
            failures += not (same and len(a) > 0)
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
