"""Numpy implementation of the population kernel.

Bit-identical to the compiled ``_kernels`` module; used when the
extension is not built or ``AIUSERSHARE_PURE_PYTHON`` is set.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
NSTREAMS = np.uint64(8)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed):
    with np.errstate(over="ignore"):
        return int(_mix(np.array([seed], dtype=np.uint64) + GOLDEN)[0])


def _counters(economy, n):
    base = np.uint64(economy) << np.uint64(32)
    return (base + np.arange(n, dtype=np.uint64)) * NSTREAMS


def _draw(key, counters, stream):
    with np.errstate(over="ignore"):
        z = _mix(key + (counters + np.uint64(stream)) * GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def uniforms(seed, economy, n, stream):
    key = np.uint64(stream_key(seed))
    return _draw(key, _counters(economy, n), stream)


def generate_block(seed, economy, n, p_desktop, p_ms, p_opt, minutes_max,
                   q_desktop, p_mobile, q_mobile, rho):
    key = np.uint64(stream_key(seed))
    c = _counters(economy, n)
    has_d = _draw(key, c, 0) < p_desktop
    ms = has_d & (_draw(key, c, 1) < p_ms)
    opt = ms & (_draw(key, c, 2) < p_opt)
    minutes = (_draw(key, c, 3) * float(minutes_max + 1)).astype(np.int32)
    ud = _draw(key, c, 4)
    ai_d = has_d & (ud < q_desktop)
    has_m = _draw(key, c, 5) < p_mobile
    sel = _draw(key, c, 7)
    other = _draw(key, c, 6)
    if rho >= 0.0:
        um = np.where(sel < rho, ud, other)
    else:
        um = np.where(sel < -rho, 1.0 - ud, other)
    ai_m = has_m & (um < q_mobile)
    flags = (has_d.astype(np.uint8)
             | (ms.astype(np.uint8) << 1)
             | (opt.astype(np.uint8) << 2)
             | (ai_d.astype(np.uint8) << 3)
             | (has_m.astype(np.uint8) << 4)
             | (ai_m.astype(np.uint8) << 5))
    return flags, minutes
