"""
HTTP服务入口，监听地址和端口可通过 PWLVERIFY_HOST / PWLVERIFY_PORT 覆盖
"""

from pwlverify.config import SERVER_HOST, SERVER_PORT
from pwlverify.main import app

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=SERVER_HOST, port=SERVER_PORT)
