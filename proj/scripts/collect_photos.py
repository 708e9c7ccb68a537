#!/usr/bin/env python3
"""Copy the bundled sample photographs used by the test corpus into data/photos.

The photographs ship with scikit-image, scikit-learn and matplotlib, plus the
samples/data directory of the OpenCV source tree (pass its path with
--opencv-samples; `pip download --no-binary :all: --no-deps opencv-python`
fetches it). Grayscale photographs are replicated to three channels and alpha
is dropped. The train/heldout split is fixed: held-out photographs never
contribute tiles to training.
"""
import argparse
import os

from PIL import Image

SKIMAGE = "skimage/data"
SKLEARN = "sklearn/datasets/images"
MPL = "matplotlib/mpl-data/sample_data"
OPENCV = "@opencv"

SPLIT = {
    "train": [
        (SKIMAGE, "astronaut.png"),
        (SKIMAGE, "chelsea.png"),
        (SKIMAGE, "rocket.jpg"),
        (SKIMAGE, "motorcycle_left.png"),
        (SKIMAGE, "motorcycle_right.png"),
        (SKIMAGE, "camera.png"),
        (SKIMAGE, "coins.png"),
        (MPL, "grace_hopper.jpg"),
        (OPENCV, "aero1.jpg"),
        (OPENCV, "aero3.jpg"),
        (OPENCV, "aloeL.jpg"),
        (OPENCV, "apple.jpg"),
        (OPENCV, "baboon.jpg"),
        (OPENCV, "basketball1.png"),
        (OPENCV, "board.jpg"),
        (OPENCV, "building.jpg"),
        (OPENCV, "butterfly.jpg"),
        (OPENCV, "chicky_512.png"),
        (OPENCV, "graf1.png"),
        (OPENCV, "leuvenA.jpg"),
        (OPENCV, "orange.jpg"),
        (OPENCV, "rubberwhale1.png"),
        (OPENCV, "ela_original.jpg"),
        (OPENCV, "box_in_scene.png"),
        (OPENCV, "pic2.png"),
        (OPENCV, "smarties.png"),
    ],
    "heldout": [
        (SKLEARN, "china.jpg"),
        (SKLEARN, "flower.jpg"),
        (SKIMAGE, "coffee.png"),
        (OPENCV, "fruits.jpg"),
        (OPENCV, "messi5.jpg"),
        (OPENCV, "squirrel_cls.jpg"),
    ],
}


def site_packages():
    import skimage
    return os.path.dirname(os.path.dirname(skimage.__file__))


def main(out_root, opencv_samples):
    base = site_packages()
    for split, items in SPLIT.items():
        os.makedirs(os.path.join(out_root, split), exist_ok=True)
        for rel, name in items:
            root = opencv_samples if rel == OPENCV else os.path.join(base, rel)
            img = Image.open(os.path.join(root, name)).convert("RGB")
            stem = os.path.splitext(name)[0]
            img.save(os.path.join(out_root, split, stem + ".png"), optimize=True)
            print(split, stem, img.size)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "photos"))
    ap.add_argument("--opencv-samples", required=True, help="opencv/samples/data directory")
    args = ap.parse_args()
    main(args.out, args.opencv_samples)
