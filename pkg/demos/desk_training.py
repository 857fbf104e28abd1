"""
Train, evaluate and compare edges at desk scale
===============================================

Builds a small RICE-style tree of synthetic pairs, prepares the 64px cache,
trains the desk preset for a few epochs, evaluates on the held-out split and
renders Canny edge maps of an output next to its ground truth.
Takes a couple of minutes on a laptop CPU. Outputs: ``demo_out/desk``.
"""
from pathlib import Path

from sufernobwa.cli import run
from sufernobwa.imaging import save_image
from sufernobwa.network import NetworkConfig, forward
from sufernobwa.pipeline import TrainConfig, build_manifest, evaluate, prepare_dataset, train
from sufernobwa.synthetic import write_rice_tree

out = Path("demo_out/desk")
root = write_rice_tree(out / "rice", 12, size=96)

# %%
# 12 pairs split 9/3 (the 390/500 ratio), resized to 64px and cached.
manifest = build_manifest(root, "rice", resize_to=64)
data = prepare_dataset(manifest, out / "cache")
print("split:", manifest.counts(), " written:", data.written)

# %%
# The desk preset: base width 8, window 4, lr 1e-4, batch 2.
cfg = TrainConfig.desk(epochs=20)
result = train(data, NetworkConfig(), cfg, out_dir=out / "run")
print("total loss %.4f -> %.4f" % (result.initial.total, result.final.total))

# %%
# Metrics on the test split (CSV and JSON next to the checkpoints).
table = evaluate(data, result.model, out_dir=out / "run")
for row in table.rows:
    print("%-6s PSNR %6.2f  SSIM %.3f  UQI %.3f" % (row["pair"], row["psnr"], row["ssim"], row["uqi"]))
print("mean  ", table.mean.formatted())

# %%
# Edge maps with thresholds 100/200 through the command-line entry point.
# Twenty epochs leave the output soft, so it may have few or no edges above
# these thresholds yet; raise ``epochs`` and the output's edges fill in.
rec, hazy, clear = data.pairs("test")[0]
save_image(forward(hazy, result.model).to_unit(), out / "output.png")
save_image(clear, out / "gt.png")
run(["edge-compare", "--a", str(out / "output.png"), "--b", str(out / "gt.png"),
     "--out", str(out / "edges")])
