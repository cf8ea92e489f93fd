"""Seed fan-out.

A base seed is split into independent per-purpose generators by spawning a
``SeedSequence`` keyed on (seed, purpose offset, *extra). The offsets below
are fixed forever; new purposes get new offsets so existing streams never
shift.
"""
import numpy as np

GRAPH = 101
FEATURES = 102
SPLIT = 103
NOISE = 201
FLIP = 202
PERTURB = 301
INIT = 401
DROPOUT = 402
TRIAL = 501
EVAL = 601


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(purpose), *(int(e) for e in extra)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
