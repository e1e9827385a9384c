"""WiFi fingerprint place recognition.

Predicts building and floor from a single WiFi scan: an autoencoder
reduces the 520-access-point signal vector to a compact representation,
a feed-forward classifier maps it to (building, floor) classes, and
classical nearest-scan/kNN baselines provide the reference point. The
``wifiloc`` CLI drives end-to-end experiments over the UJIIndoorLoc
dataset.
"""

__version__ = "0.1.0"
