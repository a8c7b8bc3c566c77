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


def run(size, seed=0):
    spec = SyntheticSpec(size=size, count=20, seed=seed, min_shapes=1, max_shapes=2)
    ds = generate_synthetic_dataset(spec)
    net = build_network(toy_config(), seed=seed)
    t0 = time.time()
    done = 0
    for upto in (200, 400, 600, 800, 1200, 1600, 2000):
        cfg = TrainConfig(total_iterations=upto, crop_size=size, seed=seed)
        net, _ = train(net, ds, cfg, start_iteration=done)
        done = upto
        print(f"size={size} seed={seed} iter={upto} "
              f"mIoU={miou(net, ds):.4f} elapsed={time.time()-t0:.0f}s", flush=True)


run(49)
run(65)
