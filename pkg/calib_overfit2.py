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


spec = SyntheticSpec(size=65, count=20, seed=0, min_shapes=1, max_shapes=1,
                     families=("rectangle", "ellipse"),
                     backgrounds=("gradient", "noise", "stripes"),
                     min_extent=0.30, max_extent=0.45)
ds = generate_synthetic_dataset(spec)
# grid-sampling IoU ceiling: perfect logits at the 17x17 grid, upsampled
ceil = []
from fgseg.data import resize_label_nearest
from fgseg import ops
for s in ds:
    small = resize_label_nearest(s.label, 17, 17).astype(np.float64)
    up = ops.bilinear_resize(small, 65, 65)
    ceil.append(jaccard(up > 0.5, s.label == 1))
print("grid ceiling mIoU:", round(float(np.mean(ceil)), 4), flush=True)

for lr in (0.01, 0.03):
    net = build_network(toy_config(), seed=0)
    t0 = time.time()
    done = 0
    for upto in (300, 600, 900, 1200):
        cfg = TrainConfig(total_iterations=upto, crop_size=65, seed=0, base_lr=lr,
                          lr_decay_every=900)
        net, log = train(net, ds, cfg, start_iteration=done)
        done = upto
        print(f"lr={lr} iter={upto} mIoU={miou(net, ds):.4f} loss={log[-1].loss:.4f} "
              f"elapsed={time.time()-t0:.0f}s", flush=True)
