import os


FORMATS = ['ppm', 'pgm', 'png']
BPP = {"1": 1, "L": 8, "P": 8, "RGB": 24, "RGBA": 32, "LA": 16, "I;16": 16, "I;16B": 16, "I;16L": 16, "I": 32, "F": 32}
# bits per channel accepted for decoding
ACCEPTED_MODES = {"1": 1, "L": 8, "P": 8, "RGB": 8, "RGBA": 8, "LA": 8}


def get_nbits_from_mode(mode: str):
    return BPP.get(mode)


def is_supported_mode(mode: str) -> bool:
    return mode in ACCEPTED_MODES


def is_image_file(path: str) -> bool:
    return os.path.splitext(path)[1].lower().lstrip('.') in FORMATS
