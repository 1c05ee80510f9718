"""
异常体系:所有库内错误都继承自 FockDimerError,并携带 CLI 退出码

退出码约定:
    0 正常
    1 检查失败 (CheckFailure)
    2 输入错误 (InputError 及其子类)
    3 数值失败 (NumericError 及其子类)
"""


class FockDimerError(Exception):
    """所有库内错误的基类"""

    exit_code = 3

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "details": {k: repr(v) for k, v in self.details.items()},
        }


class CheckFailure(FockDimerError):
    """一致性检查未通过 (报告中至少一项失败)"""

    exit_code = 1


# ============= 输入错误 (exit 2) =============

class InputError(FockDimerError):
    exit_code = 2


class SchemaError(InputError):
    """模型文件不符合 schema"""


class PatternMismatch(InputError):
    """局部移动的配置与移动类型不符"""


class PathAmbiguous(InputError):
    """非实点缺少路径类"""


class DegenerateGraph(InputError):
    """Newton 多边形面积为零"""


class EmbeddingInvalid(InputError):
    """旋转系统给出的环面嵌入无效"""


class PeriodicityRequired(InputError):
    """φ(α) 不在 (Z²)^g 中"""


class DegenerateAngles(InputError):
    """同一条边的两条 train-track 角度提升重合"""


# ============= 数值错误 (exit 3) =============

class NumericError(FockDimerError):
    exit_code = 3


class NonPositiveDefinite(NumericError):
    pass


class ThetaOverflow(NumericError):
    pass


class ThetaZero(NumericError):
    pass


class DegenerateCharacteristic(NumericError):
    pass


class QuadratureFailure(NumericError):
    pass


class BranchPoint(NumericError):
    pass


class CalibrationFailure(NumericError):
    pass


class Inconsistent(NumericError):
    """离散 Abel 映射的闭合残差过大 (提升记账错误)"""


class ZeroEdge(NumericError):
    pass


class AnglePole(NumericError):
    pass


class PolePoint(NumericError):
    pass


class NonGenericT(NumericError):
    pass


class NearSingular(NumericError):
    pass


class SectorBlocked(NumericError):
    pass


class CalibrationNeeded(NumericError):
    pass


class PathCrossesAngles(NumericError):
    pass


class SingularGrid(NumericError):
    pass
