def _format_cell(value, float_format: str) -> str:
    if isinstance(value, float):
        return format(value, float_format)
    return str(value)


def to_markdown(data: list[dict], float_format: str = ".3f") -> str:
    """Converts a list of dictionaries into a Markdown table; numbers right-aligned."""

    if not data:
        return ""

    headers = list(data[0].keys())

    numeric = [
        all(isinstance(record.get(key), int | float) for record in data) for key in headers
    ]

    str_rows = [
        [_format_cell(record.get(key, ""), float_format) for key in headers]
        for record in data
    ]

    widths = [max(len(header), 3) for header in headers]
    for row in str_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def line(cells: list[str]) -> str:
        padded = [
            cell.rjust(widths[i]) if numeric[i] else cell.ljust(widths[i])
            for i, cell in enumerate(cells)
        ]
        return "| " + " | ".join(padded) + " |"

    separator = "|" + "|".join(
        "-" * (widths[i] + 1) + ":" if numeric[i] else "-" * (widths[i] + 2)
        for i in range(len(headers))
    ) + "|"

    return "\n".join([line(headers), separator, *(line(row) for row in str_rows)])
