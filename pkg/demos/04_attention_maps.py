"""
Attention weights as CSV
========================

Train a tiny model for a moment, export the decoder's cross-attention for
one instance and print which source period each label position looks at most.
"""
import csv
import tempfile
from pathlib import Path

import numpy as np

from clsp import GeneratorConfig
from clsp.harness import build_dataset, export_attention
from clsp.transformer import ModelConfig, TrainConfig, train

records = build_dataset(GeneratorConfig(T=6, c=3, f=10000, seed=4), 200, solver="bnb")
model = ModelConfig(enc_layers=1, dec_layers=1, d_model=32, d_ff=64, max_src_len=30, max_tgt_len=6)
ckpt, _ = train(model, TrainConfig(steps=150, batch_size=32, warmup=20), records)

out = Path(tempfile.mkdtemp()) / "attention.csv"
rows = export_attention(ckpt, records[0].instance, out, kind="cross")
print(rows, "rows written to", out)

# one row per (layer, head, query); columns k0.. hold the weights over source tokens
with open(out) as fh:
    for r in csv.DictReader(fh):
        w = np.array([float(v) for k, v in r.items() if k.startswith("k")])
        by_period = w.reshape(-1, 5).sum(axis=1)
        print(f"head {r['head']} label {r['query']}: strongest source period {int(by_period.argmax()) + 1}, "
              f"weight {by_period.max():.2f}")
