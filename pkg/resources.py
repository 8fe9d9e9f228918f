import os


def resource_path(relative_path: str) -> str:
    """ Get absolute path to a bundled resource, relative to the project root (or CHEMLAB_HOME) """
    base_path = os.environ.get("CHEMLAB_HOME") or os.path.dirname(os.path.abspath(__file__))
    return os.path.join(base_path, relative_path)
