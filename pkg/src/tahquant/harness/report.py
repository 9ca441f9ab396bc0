from __future__ import annotations

import time
from typing import Dict

import numpy as np

from ..codec import decode_blob, encode_blob, size_breakdown
from ..config import QuantConfig
from ..quantizer import check_activation, dequantize_activation, quantize_activation


def compression_report(t, cfg: QuantConfig, repeats: int = 3) -> Dict[str, float]:
    """Exact size accounting of the ``.tahq`` blob plus wall-clock codec throughput.

    Throughputs are elements per second for quantize+encode and
    decode+dequantize, best of ``repeats`` runs.
    """
    a = check_activation(t)
    n = a.size
    enc_best = dec_best = float("inf")
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        comp = quantize_activation(a, cfg)
        blob = encode_blob(comp)
        t1 = time.perf_counter()
        dequantize_activation(decode_blob(blob))
        t2 = time.perf_counter()
        enc_best, dec_best = min(enc_best, t1 - t0), min(dec_best, t2 - t1)

    parts = size_breakdown(comp)
    if parts["total"] != len(blob):
        raise AssertionError(f"blob accounting mismatch: {parts['total']} != {len(blob)}")
    payload_bits = int((cfg.tile_size * comp.tile_bits.astype(np.int64)).sum())
    return {
        "elements": n,
        "blob_bytes": len(blob),
        "header_bytes": parts["header"],
        "bitmap_bytes": parts["bitmap"],
        "meta_bytes": parts["meta"],
        "payload_bytes": parts["payload"],
        "payload_bits_per_element": payload_bits / n,
        "bits_per_element": 8.0 * len(blob) / n,
        "ratio_vs_fp32": 32.0 * n / (8.0 * len(blob)),
        "transform_fraction": float(comp.transformed.mean()),
        "encode_throughput": n / max(enc_best, 1e-12),
        "decode_throughput": n / max(dec_best, 1e-12),
    }
