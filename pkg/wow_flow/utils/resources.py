"""
Resources module for wow_flow.

Provides consistent access to bundled package resources (preset run configurations)
whether running from a source checkout, an installed package or a wheel.
"""

import importlib.resources as pkg_resources
try:
    from importlib.resources import abc
except ImportError:  # Python < 3.11
    import importlib.abc as abc
from pathlib import Path
from typing import Dict, List, Optional, Union

__all__ = [
    "ResourceManager",
    "ResourceError",
    "PRESET_PACKAGE",
    "get_text",
    "list_presets",
    "preset_text",
]

PRESET_PACKAGE = "data.presets"
PRESET_SUFFIX = ".cfg"


class ResourceError(Exception):
    """Exception raised for errors in the resource module."""

    pass


class ResourceManager:
    """
    Resource manager for accessing package resources reliably in any environment.
    """

    @staticmethod
    def get_resource(
            package: str, resource_path: Optional[str] = None
    ) -> Union[abc.Traversable, List[abc.Traversable]]:
        """
        Access a package resource or list resources in a package.

        Args:
            package: The package name containing resources (e.g., 'data.presets')
            resource_path: Optional path to a specific resource within the package

        Returns:
            Either a specific resource or list of all resources in the package
        """
        try:
            package_resources = pkg_resources.files(package)

            if resource_path:
                return package_resources.joinpath(resource_path)

            return list(package_resources.iterdir())
        except (ImportError, ModuleNotFoundError, ValueError) as e:
            raise ResourceError(f"Failed to access resource in package '{package}': {e}")

    @staticmethod
    def get_text(package: str, resource_path: str) -> str:
        """
        Get the text content of a resource file.

        Args:
            package: The package name containing the resource
            resource_path: Path to the specific resource within the package

        Returns:
            The text content of the specified resource
        """
        resource = ResourceManager.get_resource(package, resource_path)
        try:
            with resource.open("r", encoding="utf-8") as f:
                return f.read()
        except Exception as e:
            raise ResourceError(f"Failed to read text from '{resource_path}': {e}")

    @staticmethod
    def list_resources(package: str, resource_type: Optional[str] = None) -> List[Dict[str, str]]:
        """
        List all file resources in a package, optionally filtered by extension.

        Args:
            package: The package name containing resources
            resource_type: Optional filter for resource types (e.g., 'cfg')

        Returns:
            A list of dictionaries with resource information (name, type)
        """
        resources_list = []
        try:
            resources = ResourceManager.get_resource(package)
            if not isinstance(resources, list):
                resources = [resources]

            for resource in resources:
                if not resource.is_file():
                    continue
                name = resource.name
                ext = Path(name).suffix.lstrip(".")
                if resource_type and ext != resource_type:
                    continue
                resources_list.append({"name": name, "type": ext})

            return sorted(resources_list, key=lambda item: item["name"])
        except ResourceError:
            raise
        except Exception as e:
            raise ResourceError(f"Failed to list resources in package '{package}': {e}")


def get_text(package: str, resource_path: str) -> str:
    """Get the text content of a resource file."""
    return ResourceManager.get_text(package, resource_path)


def list_presets() -> List[str]:
    """Names of the bundled run presets (without the ``.cfg`` suffix)."""
    return [Path(item["name"]).stem for item in ResourceManager.list_resources(PRESET_PACKAGE, "cfg")]


def preset_text(name: str) -> str:
    """Text of the bundled preset ``name`` (``circles`` or ``mnist``)."""
    if name not in list_presets():
        raise ResourceError(f"Unknown preset '{name}'; available: {', '.join(list_presets())}")
    return get_text(PRESET_PACKAGE, f"{name}{PRESET_SUFFIX}")
