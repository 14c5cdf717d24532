import sys
from pathlib import Path

# Let tests run from a fresh checkout without installation.
_src = str(Path(__file__).resolve().parent / "src")
if _src not in sys.path:
    sys.path.insert(0, _src)
