import time

import numpy as np

from fgseg.data import SyntheticSpec, generate_synthetic_dataset
from fgseg.metrics import jaccard
from fgseg.net import build_network, predict_objectness, toy_config
from fgseg.postprocess import threshold_map
from fgseg.train import TrainConfig, train


def miou(net, ds):
    return float(np.mean([
        jaccard(threshold_map(predict_objectness(net, s.image)), s.label == 1)
        for s in ds]))


spec = SyntheticSpec(size=49, count=20, seed=0, min_shapes=1, max_shapes=2,
                     backgrounds=("gradient", "noise", "stripes"))
ds = generate_synthetic_dataset(spec)
for lr in (0.003, 0.01, 0.03):
    net = build_network(toy_config(), seed=0)
    t0 = time.time()
    done = 0
    for upto in (200, 400, 600, 900, 1200):
        cfg = TrainConfig(total_iterations=upto, crop_size=49, seed=0, base_lr=lr,
                          lr_decay_every=800)
        net, log = train(net, ds, cfg, start_iteration=done)
        done = upto
        print(f"lr={lr} iter={upto} mIoU={miou(net, ds):.4f} loss={log[-1].loss:.4f} "
              f"elapsed={time.time()-t0:.0f}s", flush=True)
