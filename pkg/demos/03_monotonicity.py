"""Reading alignments: crossing edges and heatmaps.

After decoding, every output symbol carries a distribution over source
positions.  Drawing an edge wherever that weight exceeds 0.1, an output is
monotonic when no two edges cross.  A model trained to copy should align
monotonically; one trained to reverse should not.  The script trains one of
each briefly, prints the 2x2 confusion tables and writes a few heatmaps.
"""

import tempfile
from pathlib import Path

import numpy as np

from xduct.data import build_vocab, gen_synthetic
from xduct.decode import confusion_table, decode_many, export_heatmap
from xduct.models import ModelConfig, build_model
from xduct.training import TrainConfig, fit

out_dir = Path(tempfile.mkdtemp(prefix="xduct-heatmaps-"))

for rule in ("copy", "reverse"):
    ds = gen_synthetic(rule, 1000, 7, 8, seed=2, min_len=3, n_dev=100, n_test=100)
    src, tgt = build_vocab(ds.train, "source"), build_vocab(ds.train, "target")
    model = build_model(ModelConfig(d_e=32, d_h=64, d_dec=64, dropout=0.0, arch="hard"), src, tgt, seed=0)
    fit(model, ds.train, ds.dev, TrainConfig(batch_size=20, max_epochs=12, seed=0))

    results = decode_many(model, [src.encode(e.source) for e in ds.test])
    table = confusion_table(results, [list(e.target) for e in ds.test], threshold=0.1)
    print(f"\n{rule}: {100 * table.fraction_monotonic():.0f}% monotonic")
    print(table.to_tsv(), end="")

    r = results[0]
    np.set_printoptions(precision=2, suppress=True)
    print("source", r.source_symbols, "output", r.output_symbols)
    print(r.alpha)
    for k in range(3):
        export_heatmap(results[k], out_dir / f"{rule}_{k}.tsv")

print(f"\nheatmaps written to {out_dir}")
