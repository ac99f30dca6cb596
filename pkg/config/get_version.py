def get_version():
    """Get package version from metadata or the bundled pyproject.toml."""
    try:
        from importlib.metadata import PackageNotFoundError, version

        return version("wow_flow")
    except ImportError:
        pass
    except PackageNotFoundError:
        pass

    # Try to load from pyproject.toml next to the packages
    try:
        from pathlib import Path

        import toml

        pyproject = toml.load(Path(__file__).resolve().parent.parent / "pyproject.toml")
        return pyproject.get("tool", {}).get("poetry", {}).get("version", "0.0.0-dev")
    except Exception:
        return "0.0.0-dev"


if __name__ == "__main__":
    print(f"Version: {get_version()}")
