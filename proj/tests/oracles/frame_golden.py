#!/usr/bin/env python3
# Copyright 2026 The dplane Authors.
# SPDX-License-Identifier: Apache-2.0
"""Encodes the fixture frames from the documented wire layout with struct
and zlib, and writes `name hex` lines to tests/data/frame_golden.txt."""
import pathlib
import struct
import zlib

MAGIC = 0x53494D50
VERSION = 1
SCHED, SHARD, DECISIONS, CONTROL = 1, 2, 3, 4


def frame(ftype, iteration, payload):
    head = struct.pack("<IHHQI", MAGIC, VERSION, ftype, iteration, len(payload))
    return head + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def seq(seq_id, history_len, last_token, params, prompt=None):
    temp, top_k, top_p, min_p, rep, pres, freq, seed = params
    out = struct.pack("<QIiB", seq_id, history_len, last_token, 1 if prompt is not None else 0)
    out += struct.pack("<dIdddddQ", temp, top_k, top_p, min_p, rep, pres, freq, seed)
    if prompt is not None:
        out += struct.pack("<I", len(prompt)) + struct.pack("<%di" % len(prompt), *prompt)
    return out


def scheduling_fixture():
    tuned = (0.7, 40, 0.9, 0.05, 1.1, 0.25, 0.5, 42)
    neutral = (1.0, 0, 1.0, 0.0, 1.0, 0.0, 0.0, 42)
    payload = struct.pack("<I", 2)
    payload += seq(3, 0, -1, tuned, [5, 9, 2])
    payload += seq(11, 4, 17, neutral)
    payload += struct.pack("<I", 2) + struct.pack("<2Q", 1, 2)
    return frame(SCHED, 7, payload)


def decisions_fixture():
    payload = struct.pack("<I", 2)
    payload += struct.pack("<QIBf", 3, 12, 0b110, -0.5)   # accepted hot, logprob
    payload += struct.pack("<QIB", 11, 4, 0b001)          # eos
    return frame(DECISIONS, 7, payload)


def shard_fixture():
    payload = struct.pack("<HHIII", 1, 2, 2, 4, 2)
    payload += struct.pack("<2d", 1.5, -0.25)
    payload += struct.pack("<2d", 3.0, 2.5)
    payload += struct.pack("<4f", 0.5, 2.0, -1.0, 0.25)   # column-major
    return frame(SHARD, 7, payload)


def main():
    frames = {
        "scheduling_output": scheduling_fixture(),
        "decision_batch": decisions_fixture(),
        "empty_decision_batch": frame(DECISIONS, 9, b""),
        "logits_shard": shard_fixture(),
        "control_version": frame(CONTROL, 0, b"version=1\n"),
    }
    assert len(frames["empty_decision_batch"]) == 24
    out = pathlib.Path(__file__).resolve().parents[1] / "data" / "frame_golden.txt"
    with out.open("w") as f:
        f.write("# name hex\n")
        for name, raw in frames.items():
            f.write("%s %s\n" % (name, raw.hex()))


if __name__ == "__main__":
    main()
