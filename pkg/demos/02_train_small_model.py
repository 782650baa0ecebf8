"""
Learning setup decisions
========================

Label a few thousand 10-period instances exactly, train the small
transformer on them and compare its per-period accuracy with always
guessing the majority class.  Takes a few minutes on one core.
"""
import numpy as np

from clsp import GeneratorConfig
from clsp.encoding import encode_source, fit_normalizer
from clsp.harness import build_dataset
from clsp.transformer import ModelConfig, TrainConfig, greedy_accuracy, train
from clsp.transformer.train import Encoded

configs = [GeneratorConfig(T=10, c=c, f=f, seed=11) for c in (3, 5, 8) for f in (1000, 10000)]
records = build_dataset(configs, 400, solver="bnb")
train_set = [r for r in records if r.split != "test"]
test_set = [r for r in records if r.split == "test"]
print(len(train_set), "training and", len(test_set), "test instances")

# each period contributes five tokens: demand, unit cost, setup cost, capacity, holding cost
tok = fit_normalizer(r.instance for r in train_set)
print("first period tokens:", encode_source(test_set[0].instance, tok)[:5])

# setups are frequent early in the horizon and rarer later
ys = np.stack([r.setup for r in train_set])
print("share of periods with a setup, by period:", ys.mean(axis=0).round(2))

model = ModelConfig(max_src_len=50, max_tgt_len=10)
ckpt, history = train(model, TrainConfig(steps=800, lr=1e-3, warmup=100, batch_size=64), train_set)
print("loss: first", round(history[0]["loss"], 3), "last", round(history[-1]["loss"], 3))

ones = np.concatenate([r.setup for r in test_set]).mean()
acc = greedy_accuracy(ckpt.params, model, Encoded(test_set, ckpt.tokenizer))
print(f"greedy accuracy {acc:.3f} vs majority class {max(ones, 1 - ones):.3f}")
