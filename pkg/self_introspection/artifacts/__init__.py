"""Model containers and CSV/SVG export."""

from .container import (
    FORMAT_VERSION,
    KINDS,
    MAGIC,
    from_container,
    load_model,
    read_container,
    save_model,
    to_container,
    write_container,
)
from .export import (
    LatentFrame,
    SvgCanvas,
    export_brainbow_svg,
    export_container,
    export_patterns,
    export_records,
    export_scatter,
    hex_color,
    write_csv,
)

__all__ = [
    "FORMAT_VERSION",
    "KINDS",
    "MAGIC",
    "LatentFrame",
    "SvgCanvas",
    "export_brainbow_svg",
    "export_container",
    "export_patterns",
    "export_records",
    "export_scatter",
    "from_container",
    "hex_color",
    "load_model",
    "read_container",
    "save_model",
    "to_container",
    "write_container",
    "write_csv",
]
