"""Run manifests: hashed inputs, canonical config and hashed outputs, plus replay."""
import hashlib
import json
import logging
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel

from app.config import settings
from app.exceptions import MissingInput, PipelineError, ReplayMismatch
from app.models.run_config import RunConfig
from app.services.corpus_store import dump_json


# Configure logging
logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = "_manifest.json"

# (command, args, config, out_dir) -> written output paths
CommandRunner = Callable[[str, Dict[str, Any], RunConfig, Path], List[Path]]


def manifest_name(command: str) -> str:
    """File name of the run manifest of ``command``."""
    return f"{command.replace('-', '_')}{MANIFEST_SUFFIX}"


def sha256_file(path: Union[str, Path]) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class FileDigest(BaseModel):
    """A file name and the SHA-256 of its content."""

    path: str
    sha256: str


class RunManifest(BaseModel):
    """Everything needed to rerun a command and verify its outputs.

    Output paths are relative to the run directory; no field depends on the
    wall clock, so two runs of one command write identical manifests.
    """

    command: str
    args: Dict[str, Any]
    tool_version: str
    seed: int
    config: Dict[str, Any]
    config_sha256: str
    inputs: List[FileDigest]
    outputs: List[FileDigest]

    def run_config(self) -> RunConfig:
        return RunConfig.model_validate(self.config)


class ManifestService:
    """Service writing run manifests and replaying them."""

    def __init__(self, tool_version: Optional[str] = None):
        """
        Initialize manifest service.

        Args:
            tool_version: Version recorded in manifests, defaults to the settings value
        """
        self.tool_version = tool_version or settings.tool_version

    def build_manifest(self, command: str, args: Dict[str, Any], config: RunConfig,
                       inputs: Sequence[Union[str, Path]], outputs: Sequence[Union[str, Path]],
                       out_dir: Union[str, Path]) -> RunManifest:
        """
        Hash inputs and outputs of a finished command.

        Args:
            command: CLI command name
            args: Command arguments (JSON-serializable)
            config: Validated run configuration
            inputs: Files the command read
            outputs: Files the command wrote, inside ``out_dir``
            out_dir: Run directory

        Returns:
            The manifest (not yet written)

        Raises:
            MissingInput: If an input file does not exist
            PipelineError: If an output would be overwritten by the manifest
        """
        out_dir = Path(out_dir)
        input_digests = []
        for path in inputs:
            path = Path(path)
            if not path.is_file():
                raise MissingInput(str(path))
            input_digests.append(FileDigest(path=str(path), sha256=sha256_file(path)))
        output_digests = [
            FileDigest(path=Path(path).relative_to(out_dir).as_posix(), sha256=sha256_file(path))
            for path in sorted(Path(p) for p in outputs)
        ]
        if any(digest.path == manifest_name(command) for digest in output_digests):
            raise PipelineError(
                f"Output {manifest_name(command)} collides with the run manifest of '{command}'",
                "MANIFEST_COLLISION",
                {"command": command, "path": manifest_name(command)},
            )
        return RunManifest(
            command=command,
            args=args,
            tool_version=self.tool_version,
            seed=config.seed,
            config=json.loads(config.canonical_json()),
            config_sha256=config.config_hash(),
            inputs=input_digests,
            outputs=output_digests,
        )

    def write_manifest(self, manifest: RunManifest, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / manifest_name(manifest.command)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_json(manifest.model_dump(mode="json")), encoding="utf-8")
        logger.info(f"Wrote manifest {path} ({len(manifest.outputs)} outputs)")
        return path

    def read_manifest(self, path: Union[str, Path]) -> RunManifest:
        """
        Load a manifest file.

        Raises:
            MissingInput: If the file does not exist
        """
        path = Path(path)
        if not path.is_file():
            raise MissingInput(str(path))
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))

    def replay(self, manifest_path: Union[str, Path], runner: CommandRunner,
               out_dir: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """
        Rerun the command of a manifest and compare every output hash.

        Args:
            manifest_path: Manifest written by a previous run
            runner: Callable executing one command
            out_dir: Where to write the replayed outputs (temporary directory if omitted)

        Returns:
            Summary with the compared outputs

        Raises:
            ReplayMismatch: If an input changed or an output differs
        """
        manifest = self.read_manifest(manifest_path)
        changed_inputs = []
        for digest in manifest.inputs:
            if not Path(digest.path).is_file():
                raise MissingInput(digest.path)
            if sha256_file(digest.path) != digest.sha256:
                changed_inputs.append(f"input:{digest.path}")
        if changed_inputs:
            raise ReplayMismatch(str(manifest_path), changed_inputs)

        config = manifest.run_config()
        if out_dir is None:
            with tempfile.TemporaryDirectory(prefix="replay_") as tmp:
                return self._rerun(manifest, manifest_path, runner, config, Path(tmp))
        return self._rerun(manifest, manifest_path, runner, config, Path(out_dir))

    def _rerun(self, manifest: RunManifest, manifest_path: Union[str, Path], runner: CommandRunner,
               config: RunConfig, out_dir: Path) -> Dict[str, Any]:
        logger.info(f"Replaying '{manifest.command}' into {out_dir}")
        runner(manifest.command, dict(manifest.args), config, out_dir)
        mismatched = []
        for digest in manifest.outputs:
            replayed = out_dir / digest.path
            if not replayed.is_file() or sha256_file(replayed) != digest.sha256:
                mismatched.append(digest.path)
        if mismatched:
            raise ReplayMismatch(str(manifest_path), mismatched)
        logger.info(f"Replay reproduced {len(manifest.outputs)} outputs byte-identically")
        return {
            "command": manifest.command,
            "config_sha256": manifest.config_sha256,
            "outputs_checked": len(manifest.outputs),
            "identical": True,
        }
