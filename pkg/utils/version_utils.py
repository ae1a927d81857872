import subprocess
from importlib import metadata
from pathlib import Path
from typing import Dict

TOOL_NAME = "skingroups"

PROJECT_DIR = Path(__file__).resolve().parent.parent

# manifest 中记录版本的依赖（发行包名）
TRACKED_DEPENDENCIES = ("numpy", "scipy", "scikit-learn", "pandas", "joblib", "pydantic", "PyYAML")


def _git(*args) -> str:
    result = subprocess.run(
        ['git', *args],
        capture_output=True, text=True, check=True, cwd=PROJECT_DIR
    )
    return result.stdout.strip()


def get_version():
    """通过 Git 提交次数动态计算版本号"""
    try:
        n = int(_git('rev-list', '--count', 'HEAD'))
        # 映射为语义化版本: 0.{N // 10}.{N % 10}
        return f"0.{n // 10}.{n % 10}"
    except Exception:
        return "0.0.0"


def get_git_commit_hash(short=True):
    try:
        return _git('rev-parse', '--short', 'HEAD') if short else _git('rev-parse', 'HEAD')
    except Exception:
        return "Unknown"


def get_full_version_string():
    """完整版本标识，例如: skingroups v0.4.3 (a1b2c3d)"""
    return f"{TOOL_NAME} v{get_version()} ({get_git_commit_hash()})"


def dependency_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_DEPENDENCIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions
