"""Key/value text stores backing a workspace."""

from __future__ import annotations

import contextlib
import os
import tempfile
from pathlib import Path
from typing import ContextManager, Iterator, Protocol

from filelock import FileLock

from .errors import WorkspaceError


class Store(Protocol):
    def read(self, name: str) -> str: ...

    def write(self, name: str, text: str, private: bool = False) -> None: ...

    def exists(self, name: str) -> bool: ...

    def list(self, prefix: str) -> list[str]: ...

    def is_empty(self) -> bool: ...

    def lock(self) -> ContextManager: ...


class MemoryStore:
    def __init__(self) -> None:
        self.files: dict[str, str] = {}

    def read(self, name: str) -> str:
        try:
            return self.files[name]
        except KeyError:
            raise WorkspaceError(f"missing workspace file {name}") from None

    def write(self, name: str, text: str, private: bool = False) -> None:
        self.files[name] = text

    def exists(self, name: str) -> bool:
        return name in self.files

    def list(self, prefix: str) -> list[str]:
        prefix = prefix.rstrip("/") + "/"
        return sorted(n for n in self.files if n.startswith(prefix) and "/" not in n[len(prefix):])

    def is_empty(self) -> bool:
        return not self.files

    def lock(self) -> ContextManager:
        return contextlib.nullcontext()


class DirectoryStore:
    """Files under a root directory; writes are atomic renames."""

    LOCK_NAME = ".lock"

    def __init__(self, root: os.PathLike | str):
        self.root = Path(root)

    def _path(self, name: str) -> Path:
        path = (self.root / name).resolve()
        if self.root.resolve() not in path.parents:
            raise WorkspaceError(f"path {name!r} escapes the workspace")
        return path

    def read(self, name: str) -> str:
        try:
            return self._path(name).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise WorkspaceError(f"missing workspace file {name}") from None

    def write(self, name: str, text: str, private: bool = False) -> None:
        path = self._path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.chmod(tmp, 0o600 if private else 0o644)
            os.replace(tmp, path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise

    def exists(self, name: str) -> bool:
        return self._path(name).exists()

    def list(self, prefix: str) -> list[str]:
        directory = self._path(prefix)
        if not directory.is_dir():
            return []
        base = prefix.rstrip("/")
        return sorted(f"{base}/{p.name}" for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))

    def is_empty(self) -> bool:
        if not self.root.exists():
            return True
        return not any(p.name != self.LOCK_NAME for p in self.root.iterdir())

    def lock(self) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / self.LOCK_NAME), timeout=30)

    def iter_files(self) -> Iterator[Path]:
        return (p for p in sorted(self.root.rglob("*")) if p.is_file() and p.name != self.LOCK_NAME)
