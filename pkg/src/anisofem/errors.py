"""Exception hierarchy shared by all anisofem modules."""


class AnisoFemError(Exception):
    """Base class for all library errors."""


class MeshError(AnisoFemError):
    """Invalid mesh topology or geometry."""


class NonConforming(MeshError):
    pass


class DegenerateTriangle(MeshError):
    pass


class DanglingNode(MeshError):
    pass


class InvalidParams(AnisoFemError, ValueError):
    pass


class ParseError(AnisoFemError):
    pass


class MeshIOError(AnisoFemError, OSError):
    pass


class SolverFailure(AnisoFemError):
    pass


class NewtonDivergence(SolverFailure):
    pass


class BoundaryEdge(AnisoFemError):
    """A jump was requested on an edge lying on the domain boundary."""


class MissingExactSolution(AnisoFemError):
    pass


class NegativeTestFunction(AnisoFemError):
    pass


class EdgeNotInPatch(AnisoFemError):
    pass


class DegenerateSupport(AnisoFemError):
    pass


class NonPositiveInput(AnisoFemError, ValueError):
    pass


class ZeroError(AnisoFemError):
    """The discrete solution coincides with the exact one; G is undefined."""


class UnstructuredMesh(MeshError):
    pass


class ConfigError(AnisoFemError):
    pass
