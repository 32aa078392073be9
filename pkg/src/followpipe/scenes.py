"""Canned scene builders used by the test suite, the scripts, and the CLI.

All builders are deterministic in their arguments; the returned scenes carry
their own seeds so identical calls render identical frames.
"""

from __future__ import annotations

from .providers import CameraModel, ClassSpec, ObjectSpec, Occluder, SceneScript

BUILTIN_NAMES = ("stationary", "line", "tunnel", "decoys", "two_discs")


def default_camera(width: int = 128, height: int = 96, scale: float = 0.025) -> CameraModel:
    return CameraModel(view_width=width, view_height=height, scale=scale)


def stationary_scene(
    sigma: float = 0.0, dim: int = 32, seed: int = 0, duration: float = 30.0,
    frame_rate: float = 20.0, edge_bleed: int = 0,
) -> SceneScript:
    """One disc target sitting still at the origin."""
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=20.0,
        background_class="ground",
        classes=(ClassSpec("target", 2), ClassSpec("ground", 1, align=("target", 0.0))),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.5,
                       ((0.0, 0.0, 0.0), (duration, 0.0, 0.0))),
        ),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=edge_bleed,
    )


def line_scene(
    speed: float = 0.2, duration: float = 240.0, sigma: float = 0.1,
    dim: int = 16, seed: int = 0, frame_rate: float = 10.0,
    edge_bleed: int = 0,
) -> SceneScript:
    """Target moving in a straight diagonal line at a constant speed."""
    # diagonal course, equal speed components
    leg = speed * duration / (2**0.5)
    x1, y1 = -leg / 2, -leg / 2
    x2, y2 = leg / 2, leg / 2
    extent = max(20.0, leg * 1.6)
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=extent,
        background_class="ground",
        classes=(ClassSpec("target", 2), ClassSpec("ground", 1, align=("target", 0.0))),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.5,
                       ((0.0, x1, y1), (duration, x2, y2))),
        ),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=edge_bleed,
    )


def tunnel_scene(
    sigma: float = 0.1, dim: int = 16, seed: int = 0,
    occlusion: tuple[float, float] = (12.0, 17.0),
    duration: float = 40.0, frame_rate: float = 10.0, speed: float = 0.2,
    edge_bleed: int = 0,
) -> SceneScript:
    """Moving target passing under an occluding slab during `occlusion`.

    The slab sits over the target's path segment for that interval, so the
    tracker loses the object and must re-detect it after re-emergence.
    """
    leg = speed * duration
    x1, x2 = -leg / 2, leg / 2
    # slab covers where the target sits during the occlusion window, padded
    t0, t1 = occlusion
    ox0 = x1 + speed * t0 - 0.8
    ox1 = x1 + speed * t1 + 0.8
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=max(20.0, leg * 2.5),
        background_class="ground",
        classes=(ClassSpec("target", 2), ClassSpec("ground", 1, align=("target", 0.0))),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.5,
                       ((0.0, x1, 0.0), (duration, x2, 0.0))),
        ),
        occluders=(Occluder(rect=(ox0, -1.5, ox1 - ox0, 3.0), t0=t0, t1=t1),),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=edge_bleed,
    )


def decoy_scene(
    sigma: float = 0.1, dim: int = 32, seed: int = 0,
    decoy_cosine: float = 0.49, duration: float = 20.0,
    frame_rate: float = 10.0, edge_bleed: int = 1,
) -> SceneScript:
    """Target plus decoy objects whose class hugs the separability cap.

    Exercises the false-positive gap between single-query and multi-query
    matching: the decoy basis sits at `decoy_cosine` to the target basis.
    """
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=20.0,
        background_class="ground",
        classes=(
            ClassSpec("target", 2),
            ClassSpec("ground", 1, align=("target", 0.0)),
            ClassSpec("decoy", 3, align=("target", decoy_cosine)),
        ),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.5,
                       ((0.0, 0.0, 0.0), (duration, 0.0, 0.0))),
            ObjectSpec("decoy0", "decoy", "rect", 0.8,
                       ((0.0, -1.0, 0.8), (duration, -1.0, 0.8))),
            ObjectSpec("decoy1", "decoy", "disc", 0.7,
                       ((0.0, 1.1, -0.7), (duration, 1.1, -0.7))),
        ),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=edge_bleed,
    )


def two_discs_scene(
    sigma: float = 0.0, dim: int = 32, seed: int = 0, duration: float = 10.0,
    frame_rate: float = 10.0, edge_bleed: int = 0,
) -> SceneScript:
    """Two same-class discs, for multi-instance coarse detection."""
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=20.0,
        background_class="ground",
        classes=(ClassSpec("target", 2), ClassSpec("ground", 1, align=("target", 0.0))),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.5,
                       ((0.0, -0.8, 0.0), (duration, -0.8, 0.0))),
            ObjectSpec("obj1", "target", "disc", 0.5,
                       ((0.0, 0.8, 0.3), (duration, 0.8, 0.3))),
        ),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=edge_bleed,
    )


def quality_scene(
    sigma: float = 0.1, dim: int = 32, seed: int = 0, duration: float = 20.0,
    frame_rate: float = 10.0,
) -> SceneScript:
    """Annotated-sequence scene for detection-quality experiments.

    Boundary bleed is on: coarse per-pixel grouping then loses edge pixels
    and picks up halo pixels, while mask-route detection over clean candidate
    masks stays exact, reproducing the mask-quality gap between the routes.
    """
    return SceneScript(
        duration=duration,
        frame_rate=frame_rate,
        world_extent=20.0,
        background_class="ground",
        classes=(ClassSpec("target", 2), ClassSpec("ground", 1, align=("target", 0.0))),
        objects=(
            ObjectSpec("obj0", "target", "disc", 0.6,
                       ((0.0, -1.0, -0.6), (duration, 1.0, 0.6))),
        ),
        noise_sigma=sigma,
        dim=dim,
        seed=seed,
        edge_bleed=1,
    )


def builtin_scene(name: str, **kwargs) -> SceneScript:
    builders = {
        "stationary": stationary_scene,
        "line": line_scene,
        "tunnel": tunnel_scene,
        "decoys": decoy_scene,
        "two_discs": two_discs_scene,
        "quality": quality_scene,
    }
    if name not in builders:
        raise KeyError(f"unknown builtin scene {name!r}; have {sorted(builders)}")
    return builders[name](**kwargs)
