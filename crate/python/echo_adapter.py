"""Minimal inference adapter speaking the fmod wire protocol on stdin/stdout.

Answers every tensor with a fixed score list. Scores come from the command
line as label=score pairs, e.g.

    python3 echo_adapter.py cab=0.6 hen=0.3 tabby=0.1

Use as `--backend "external:exec:python3 python/echo_adapter.py cab=0.6 hen=0.4"`.
"""

import struct
import sys

REQUEST_MAGIC = b"FMODTNSR"
RESPONSE_MAGIC = b"FMODSCRS"


def read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def parse_scores(args):
    scores = []
    for arg in args or ["cab=1.0"]:
        label, _, value = arg.rpartition("=")
        scores.append((label, float(value)))
    return scores


def encode_response(scores):
    out = [RESPONSE_MAGIC, struct.pack("<I", len(scores))]
    for label, score in scores:
        raw = label.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<f", score))
    return b"".join(out)


def main():
    scores = parse_scores(sys.argv[1:])
    stdin, stdout = sys.stdin.buffer, sys.stdout.buffer
    while True:
        magic = read_exact(stdin, 8)
        if magic is None:
            return 0
        if magic != REQUEST_MAGIC:
            sys.stderr.write("bad request magic\n")
            return 1
        header = read_exact(stdin, 13)
        height, width, channels, _layout = struct.unpack("<IIIB", header)
        if read_exact(stdin, 4 * height * width * channels) is None:
            return 1
        stdout.write(encode_response(scores))
        stdout.flush()


if __name__ == "__main__":
    sys.exit(main())
