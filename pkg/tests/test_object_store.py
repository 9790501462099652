import io

import pytest

import object_store


class _FakeS3Client:
    def __init__(self):
        self.objects: dict[tuple[str, str], bytes] = {}

    def put_object(self, Bucket: str, Key: str, Body: bytes) -> None:
        self.objects[(Bucket, Key)] = Body

    def get_object(self, Bucket: str, Key: str) -> dict:
        return {'Body': io.BytesIO(self.objects[(Bucket, Key)])}


def test_local_round_trip(tmp_path):
    path: str = str(tmp_path / "board.txt")
    object_store.write_text(path, "zoë\n")
    assert object_store.read_text(path) == "zoë\n"
    assert not object_store.is_s3_uri(path)


def test_s3_round_trip(monkeypatch):
    fake_client: _FakeS3Client = _FakeS3Client()
    monkeypatch.setattr(object_store.boto3, "client", lambda service_name: fake_client)

    object_store.write_bytes("s3://ballots/2026/board.txt", b"\x00\x01")
    assert fake_client.objects == {("ballots", "2026/board.txt"): b"\x00\x01"}
    assert object_store.read_bytes("s3://ballots/2026/board.txt") == b"\x00\x01"


@pytest.mark.parametrize("uri", ["s3://", "s3://bucket-only", "s3://bucket/", "s3:///key"])
def test_incomplete_s3_uris(uri):
    with pytest.raises(ValueError):
        object_store._split_s3_uri(uri)
