"""Plain cross-entropy against the full two-network method at heavy label noise.

Each run takes a few seconds on a laptop CPU.

Run: python3 demos/04_noisy_training.py
"""
from dataclasses import replace

from dividemix.config import TrainConfig
from dividemix.trainer import run_experiment

base = TrainConfig()
base = replace(base, noise=replace(base.noise, kind="sym-all", ratio=0.8))

for method in ("ce", "dividemix"):
    cfg = replace(base, train=replace(base.train, method=method))
    hist = run_experiment(cfg)
    s = hist.summary()
    print(f"{method:>9}: best {s['best']:.3f}  last-10 mean {s['last10']:.3f}")
    if method == "dividemix":
        last = hist.records[-1]
        print(f"           final labeled fraction net1 {last['labeled_frac_net1']:.2f}, "
              f"division AUC net1 {last['auc_net1']:.3f} net2 {last['auc_net2']:.3f}")
