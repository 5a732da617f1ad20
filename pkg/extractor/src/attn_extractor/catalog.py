"""Producer-side copy of the VOC class catalog used in bundle manifests.

The engine and the extractor share only the file formats; this table is
the extractor's half of that contract.
"""

import re

VOC_CLASSES = (
    "background", "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow", "diningtable", "dog",
    "horse", "motorbike", "person", "pottedplant", "sheep", "sofa",
    "train", "tvmonitor",
)

# Query token per class; multiword VOC names map to more expressive tokens.
OVAM_TOKENS = {
    "diningtable": "table",
    "tvmonitor": "monitor",
    "pottedplant": "pot plant",
    "aeroplane": "airplane",
}

# Spellings that count as a mention of the class inside a prompt.
_MENTION_VARIANTS = {
    "aeroplane": ("aeroplane", "airplane", "plane"),
    "diningtable": ("diningtable", "dining table", "table"),
    "pottedplant": ("pottedplant", "potted plant", "pot plant"),
    "tvmonitor": ("tvmonitor", "tv monitor", "monitor", "television"),
    "motorbike": ("motorbike", "motorcycle"),
    "person": ("person", "people", "man", "woman"),
}


def ovam_token(class_name: str) -> str:
    return OVAM_TOKENS.get(class_name, class_name)


def classes_in_prompt(prompt: str) -> list:
    """Class ids (1..20, ascending) whose name variants occur in the prompt."""
    text = prompt.lower()
    found = []
    for cid, name in enumerate(VOC_CLASSES):
        if cid == 0:
            continue
        for variant in _MENTION_VARIANTS.get(name, (name,)):
            if re.search(rf"\b{re.escape(variant)}s?\b", text):
                found.append(cid)
                break
    return found
