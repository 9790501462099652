import typing


_stage_state: dict[str, typing.Any] = {
    'label'             : None,
    'stages'            : None,
    'curr_stage_idx'    : None,
}


def create_pipeline(stage_descriptions: typing.Iterable[str], label: str = "Protocol run") -> None:
    global _stage_state

    if _stage_state['stages'] is not None and _stage_state['curr_stage_idx'] <= len(_stage_state['stages']):
        print(f"WARN: new \"{label}\" stages replace unfinished \"{_stage_state['label']}\" stages")

    _stage_state['label'] = label
    _stage_state['stages'] = list(stage_descriptions)
    _stage_state['curr_stage_idx'] = 1


def stage_count() -> int:
    return len(_stage_state['stages'] or [])


def next_stage_banner() -> str:
    global _stage_state

    if _stage_state['stages'] is None:
        raise ValueError("next_stage_banner called before create_pipeline")
    if _stage_state['curr_stage_idx'] > len(_stage_state['stages']):
        raise ValueError(f"all {len(_stage_state['stages'])} \"{_stage_state['label']}\" stages already announced")

    stage_banner: str = f"\n{_stage_state['label']} stage {_stage_state['curr_stage_idx']:2} of " \
                        f"{len(_stage_state['stages']):2}: " \
                        f"{_stage_state['stages'][_stage_state['curr_stage_idx'] - 1]}"

    _stage_state['curr_stage_idx'] += 1

    return stage_banner
