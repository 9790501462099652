"""Read and write CLI artifacts on local disk or, for ``s3://bucket/key`` paths, in S3."""
import boto3


def is_s3_uri(path: str) -> bool:
    return path.startswith("s3://")


def _split_s3_uri(s3_uri: str) -> tuple[str, str]:
    s3_tokens: list[str] = s3_uri.split('/')
    s3_bucket_name: str = s3_tokens[2] if len(s3_tokens) > 2 else ""
    s3_bucket_key: str = '/'.join(s3_tokens[3:])
    if not s3_bucket_name or not s3_bucket_key:
        raise ValueError(f"S3 URI \"{s3_uri}\" needs both a bucket and a key")
    return s3_bucket_name, s3_bucket_key


def write_bytes(path: str, content: bytes) -> None:
    if is_s3_uri(path):
        s3_bucket_name, s3_bucket_key = _split_s3_uri(path)
        boto3.client('s3').put_object(Bucket   = s3_bucket_name,
                                      Key      = s3_bucket_key,
                                      Body     = content)
        return

    with open(path, "wb") as output_handle:
        output_handle.write(content)


def read_bytes(path: str) -> bytes:
    if is_s3_uri(path):
        s3_bucket_name, s3_bucket_key = _split_s3_uri(path)
        s3_object: dict = boto3.client('s3').get_object(Bucket=s3_bucket_name, Key=s3_bucket_key)
        return s3_object['Body'].read()

    with open(path, "rb") as input_handle:
        return input_handle.read()


def write_text(path: str, text: str) -> None:
    write_bytes(path, text.encode("utf-8"))


def read_text(path: str) -> str:
    return read_bytes(path).decode("utf-8")
