from __future__ import annotations
import base64
import os
import re
from typing import Any, Dict

import markdown
from jinja2 import Environment, FileSystemLoader, select_autoescape

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "templates")

MIME_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".svg": "image/svg+xml",
}

HTML_PAGE = """<!DOCTYPE html>
<html>
<head>
    <meta charset="UTF-8">
    <title>{title}</title>
    <style>
        body {{ font-family: 'DejaVu Sans', Arial, sans-serif; max-width: 1100px; margin: 0 auto; padding: 20px; }}
        table {{ border-collapse: collapse; }}
        th, td {{ border: 1px solid #ccc; padding: 4px 8px; text-align: right; }}
        img {{ max-width: 100%; }}
    </style>
</head>
<body>
{body}
</body>
</html>
"""


def render_template(template_name: str, payload: Dict[str, Any], templates_dir: str = TEMPLATES_DIR) -> str:
    env = Environment(
        loader=FileSystemLoader(templates_dir),
        autoescape=select_autoescape(enabled_extensions=(".html", ".xml")),
        trim_blocks=True,
        lstrip_blocks=True,
    )
    return env.get_template(template_name).render(**payload)


def _data_uri(path: str) -> str | None:
    if not os.path.exists(path):
        return None
    with open(path, "rb") as f:
        encoded = base64.b64encode(f.read()).decode("utf-8")
    mime = MIME_TYPES.get(os.path.splitext(path)[1].lower(), "image/png")
    return f"data:{mime};base64,{encoded}"


def convert_markdown_to_html(md_path: str, html_path: str, title: str = "Report") -> str:
    """Standalone HTML next to the markdown report; relative image paths resolve against the report folder."""
    with open(md_path, "r", encoding="utf-8") as f:
        html_body = markdown.markdown(f.read(), extensions=["extra", "tables"])
    base = os.path.dirname(os.path.abspath(md_path))

    def embed(match: re.Match) -> str:
        src = match.group(1)
        if src.startswith(("data:", "http://", "https://")):
            return match.group(0)
        uri = _data_uri(src if os.path.isabs(src) else os.path.join(base, src))
        return match.group(0) if uri is None else match.group(0).replace(src, uri)

    html_body = re.sub(r'<img[^>]*src="([^"]+)"[^>]*>', embed, html_body)
    with open(html_path, "w", encoding="utf-8") as f:
        f.write(HTML_PAGE.format(title=title, body=html_body))
    return html_path
