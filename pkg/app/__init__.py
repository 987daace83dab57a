"""nvcycle: phonon-assisted charge-cycling rates of NV centres, blinking traces and fits."""
import sys


__version__ = "0.1.0"

if sys.version_info[:2] < (3, 12):
    print(
        "Warning: nvcycle needs Python 3.12 or newer, running {ver}".format(
            ver=".".join(map(str, sys.version_info[:3]))
        )
    )
