"""pamkit: passive-acoustic-monitoring dataset curation and evaluation.

Detection, feature extraction, augmentation, embedding clustering, the
curated dataset store, the evaluation protocol, and the review service live
in their own modules; the CLI in pamkit.cli ties them together.
"""

__version__ = "0.1.0"
