"""Pascal VOC class catalog: names, attention token texts, color palette."""

from dataclasses import dataclass, field

VOC_CLASSES = (
    "background", "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow", "diningtable", "dog",
    "horse", "motorbike", "person", "pottedplant", "sheep", "sofa",
    "train", "tvmonitor",
)

IGNORE_ID = 255

# Token texts used when querying cross-attention; a few VOC names are poor
# text-encoder tokens and get replaced by more expressive ones.
TOKEN_RENAMES = {
    "diningtable": "table",
    "tvmonitor": "monitor",
    "pottedplant": "pot plant",
    "aeroplane": "airplane",
}


def voc_palette():
    """256-entry RGB table, standard VOC bit-interleaved generation.

    Entry i gets one bit of i per channel per round, packed from the MSB
    down: entry 0 is black, entry 1 is (128, 0, 0).
    """
    palette = []
    for i in range(256):
        r = g = b = 0
        cid = i
        for j in range(8):
            r |= ((cid >> 0) & 1) << (7 - j)
            g |= ((cid >> 1) & 1) << (7 - j)
            b |= ((cid >> 2) & 1) << (7 - j)
            cid >>= 3
        palette.append((r, g, b))
    return palette


@dataclass(frozen=True)
class ClassCatalog:
    names: tuple = VOC_CLASSES
    ignore_id: int = IGNORE_ID
    palette: tuple = field(default_factory=lambda: tuple(voc_palette()))

    @property
    def ovam_tokens(self):
        return tuple(TOKEN_RENAMES.get(n, n) for n in self.names)

    def class_id(self, name: str) -> int:
        return self.names.index(name)

    def flat_palette(self):
        """Palette flattened to 768 ints, as PNG writers expect."""
        return [v for rgb in self.palette for v in rgb]


DEFAULT_CATALOG = ClassCatalog()
