# SPDX-License-Identifier: Apache-2.0
"""Single-image-to-3D generation: python bindings for the ip3d core."""

from .ip3d_core import (
    __version__,
    evaluate,
    export_mesh,
    generate,
    read_png,
    registered_backends,
    registered_extractors,
    render_turntable,
    render_view,
    sphere_preview,
)

__all__ = [
    "__version__",
    "evaluate",
    "export_mesh",
    "generate",
    "read_png",
    "registered_backends",
    "registered_extractors",
    "render_turntable",
    "render_view",
    "sphere_preview",
]
