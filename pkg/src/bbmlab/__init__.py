"""bbmlab: a numerical laboratory for BBM solitary-wave collisions."""

__version__ = "0.1.0"


def version_hash() -> str:
    """Short content hash of the package sources, embedded in reports."""
    import hashlib
    import pathlib

    root = pathlib.Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]
