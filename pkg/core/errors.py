"""SkinGroups 异常定义。exit_code 供命令行入口映射退出码。"""


class SkinGroupsError(Exception):
    exit_code = 1
    kind = "validation"


class DomainError(SkinGroupsError, ValueError):
    """参数或数据取值非法"""


class OutOfRangeError(DomainError):
    def __init__(self, index: int, value, message: str = None):
        self.index = index
        self.value = value
        super().__init__(message or f"sample {index} (value {value}) lies outside the partition cover")


class UndefinedGroupError(DomainError):
    def __init__(self, group: int, message: str = None):
        self.group = group
        super().__init__(message or f"group {group} is empty")


class DataFormatError(DomainError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ArtifactError(DomainError):
    pass


class ConfigError(DomainError):
    pass


class InfeasibleError(SkinGroupsError):
    exit_code = 2
    kind = "infeasible"
