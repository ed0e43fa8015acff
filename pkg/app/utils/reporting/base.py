from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, List


@dataclass
class ResultItem:
    """One output file waiting to be written: a table (list of row dicts) or a JSON document."""

    name: str
    kind: str
    data: Any


class ResultCollector:
    """
    Collects result tables and documents during a command and hands them out at the end.
    """

    def __init__(self):
        """
        Initialize the result collector.

        Creates a new collector instance with an empty item list.
        """
        self.items: List[ResultItem] = []

    def add(self, name: str, kind: str, data: Any):
        """
        Add an item to the collector.

        Parameters:
            name (str): File name relative to the output directory
            kind (str): "csv" or "json"
            data: Row dicts for csv, any JSON-serializable value for json

        Raises:
            ValueError: If the name was already collected
        """
        if any(item.name == name for item in self.items):
            raise ValueError(f"Result '{name}' was collected twice")
        self.items.append(ResultItem(name=name, kind=kind, data=data))

    def clear(self):
        """
        Clear all collected items.
        """
        self.items.clear()

    def get_all(self) -> List[ResultItem]:
        """
        Get all collected items.

        Returns:
            List[ResultItem]: Copy of all collected items, in insertion order
        """
        return self.items[:]


class BaseWriter(ABC):
    """
    Abstract base class for all result writers.
    """

    kind: str = ""

    @abstractmethod
    def write(self, path: str, data: Any):
        """
        Write one result file.

        Parameters:
            path (str): Destination file path
            data: Payload of the matching kind
        """
        pass
